"""Commands module"""
from . import convergence, select, semigroup, verify

__all__ = ['convergence', 'select', 'semigroup', 'verify']
