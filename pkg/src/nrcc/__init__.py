"""Temporal netload range cost curve (NRCC) toolkit.

Builds budget-swept flexibility product menus for radial distribution
feeders: a least-cost baseline plan, atemporal import/export caps, windowed
range+energy envelopes, and rebound-governed refinements, plus an
independent Monte-Carlo deliverability verifier.
"""

__version__ = "0.1.0"
