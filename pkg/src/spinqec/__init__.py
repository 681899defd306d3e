"""Simulation and analysis toolkit for a three-qubit phase-flip code on spin qubits."""

__version__ = "0.1.0"
