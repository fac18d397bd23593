"""Workbench for random walks reinforced by their recent-history window.

A walk carries l+1 candidate step laws with strictly increasing means and a
ladder of l thresholds. At each step it averages its last N increments and,
depending on where that average falls in the threshold ladder, keeps its
current law or switches to a neighbour. The package computes the predicted
long-run speed from large-deviation rate functions and checks that prediction
against direct Monte Carlo simulation.
"""

__version__ = "0.1.0"
