"""Nonlinear permanent market impact toolkit."""

__version__ = '1.0.0'
