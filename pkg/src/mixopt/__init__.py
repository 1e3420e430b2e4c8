"""Design tools for a spline-baffled micromixer channel.

Subpackages cover geometry construction, collocation sampling, a small
array autodiff core with dense networks, flow physics residuals, training,
mixing metrics, a PPO design policy, and a GA baseline.
"""

__version__ = "0.1.0"
