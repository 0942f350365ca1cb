"""Desk-scale toolkit for studying layer criticality in a mini conformer.

Trains a small conformer-style classifier on synthetic sequence data,
locates ambient vs. critical encoder layers by re-initialization /
re-randomization sweeps, computes per-module weight-churn tables, and
runs a federated-averaging simulation with criticality-targeted
federated dropout.
"""

__version__ = "0.1.0"
