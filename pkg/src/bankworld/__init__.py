"""Bank world: a deterministic multi-agent gem-collection gridworld.

Agents move on a grid, pick up gems, and deposit them at a central bank
cell. A centralized controller owns all learning state; a greedy
Manhattan-distance planner allocates gems to agents. Training supports a
random baseline, flat tabular Q-learning, and Q-learning over two
sub-task options (fetch a gem, carry it to the bank), each with its own
projected state representation.
"""

__version__ = "0.1.0"
