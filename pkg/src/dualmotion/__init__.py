"""Multi-entity motion prediction with a persistent-transient channel duality.

A library for forecasting the joint motion of humans and the objects they
manipulate: an always-on relational recurrent channel over the whole scene,
short-lived egocentric channels spawned per human while they interact, and a
learned recurrent switch that manages those channels' life cycles.
"""

from dualmotion.tensor import Tensor, no_grad, finite_diff_check

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "finite_diff_check", "__version__"]
