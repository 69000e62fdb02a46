"""SimAgg and DP-SimAgg federated learning simulation."""

__version__ = "0.1.0"
