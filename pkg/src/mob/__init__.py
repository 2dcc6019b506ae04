"""Method-of-brackets engine for definite integrals over [0, inf)^n."""

__version__ = "0.1.0"
