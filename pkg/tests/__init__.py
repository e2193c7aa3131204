"""
Test package for the DI-QSDC simulator.

This package contains unit tests for the simulator core, protocol steps,
adversary models and reporting, plus end-to-end tests of the command line.
"""
