"""Hybrid-automaton platoon simulator with variance-driven time headways."""
