"""Statistical arbitrage risk: elastic-net replicates, portfolio sorts and inference."""

__version__ = "0.1.0"
