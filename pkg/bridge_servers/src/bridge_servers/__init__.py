"""Stdio model servers speaking the line-JSON sampler bridge protocol:
a trivial echo model for conformance tests and a mixture density network."""

__version__ = "0.1.0"
