"""Defender policies for a computer network under progressive attack.

The network is a discrete event system: each computer sits at a security
level N < R < W < F, an attacker escalates levels, and a defender that only
partially observes the attack can sense or re-image computers.  The defender
plans on the observer (the set of states consistent with what it has seen)
with min-max discounted value iteration.
"""

__version__ = "0.1.0"
