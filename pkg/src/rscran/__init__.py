"""Rate-splitting transmission design for cloud radio access networks.

Pipeline: network drop -> large-scale CSI -> stream scheme -> BS clustering
-> sample-average ergodic sum-rate maximization (alternating closed-form
receiver/weight updates with a convex beamformer/rate subproblem).
"""

__version__ = "0.1.0"
