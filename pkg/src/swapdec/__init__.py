"""Qubit-level simulation of decoherence as alternating observer-reference and
observer-pointer entanglement, with Landauer bookkeeping, Zeno runs and
Leggett-Garg diagnostics."""

__version__ = "0.1.0"
