"""Adaptive Koopman model predictive control.

Online EDMD identification of lifted linear dynamics, condensed convex MPC in
incremental-control form, and simulated 1R/2R robot plants for tracking,
disturbance and model-uncertainty experiments.
"""

__version__ = "0.1.0"
