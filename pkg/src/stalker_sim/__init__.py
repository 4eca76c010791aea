"""Attracted random walkers chasing Brownian motion, and an opinion-driven order book.

Modules:

``rng``
    Seeded Philox streams and in-kernel SplitMix64 counters.
``exit_time``, ``paths``
    Exit-time law of Brownian motion, fine paths and eps-skeletons.
``stalker``
    Stalker processes following a skeleton, coupling checks.
``phi_chain``
    The pre-jump distance chain, level-set hitting and transience tools.
``opinion_game``
    Agent-based order book.
``stats``
    Returns, volatility memory, recurrence diagnostics.
"""
__version__ = "0.1.0"
