"""Two-tier fog blockchain for vehicle networks: grouping, hierarchical PBFT,
identity authentication and the reliability models behind them."""

__version__ = "0.1.0"
