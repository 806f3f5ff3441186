"""
CB-MCTS: decentralized multi-agent Monte Carlo tree search
"""

__version__ = "1.0.0"
