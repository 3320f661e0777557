"""Time-to-IPO survival modelling for private companies.

An AFT model gives the time-to-IPO distribution of firms that are not
bankrupt or acquired. A small neural classifier gives the probability of
that exit, and the two combine into a marginal IPO probability over any
horizon.
"""

__version__ = "0.1.0"
