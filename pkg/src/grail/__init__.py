"""Gaze-guided relational imitation learning over differentiable logic policies.

Rules are first-order clauses over object-centric predicates; each clause
carries a weight in [0, 1] learned by behavior cloning.  During training the
valuations of ground atoms may be attenuated by recorded gaze, which never
reaches the deployed policy.
"""
from __future__ import annotations

__version__ = "0.1.0"
