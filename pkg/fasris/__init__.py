"""
fasris - outage analysis for RIS-assisted links with a fluid-antenna receiver.

Analytical estimators (full CLT, block-correlation CLT, i.i.d. CLT) are
validated against an exact Monte Carlo simulation of the physical channel.
"""

__version__ = "0.1.0"
