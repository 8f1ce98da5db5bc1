"""Two-stage energy management for a grid-connected microgrid.

Day-ahead unit commitment fixes the generator on/off schedule; hour-ahead
dispatch then solves a drift-plus-penalty problem per slot, steering the
time-average elastic-demand shortage and the storage SOC with virtual
queues. An embedded MILP solver (dual simplex plus branch-and-bound)
solves both stages.
"""

__version__ = "0.1.0"
