"""
Test package for the hybrid platoon simulator

This package contains test modules for the model, the simulator, the scenario
format, the command line and the MCP tools.
"""
