"""Find conference papers with authors from a target geography and nominate them."""

__version__ = "0.1.0"
