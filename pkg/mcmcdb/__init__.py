from .database import ProbabilisticDatabase
from .evaluate import EvaluationConfig, MarginalEstimate
from .query import MultisetAnswer, scan, where
from .schema import (ContractViolation, CorruptionError, DomainError,
    MCMCDBError, ParseError, QueryValidationError, SchemaError, StateSpaceError)
from .world import Delta, World

__version__ = '0.1'

__all__ = ['ContractViolation', 'CorruptionError', 'Delta', 'DomainError',
           'EvaluationConfig', 'MCMCDBError', 'MarginalEstimate', 'MultisetAnswer',
           'ParseError', 'ProbabilisticDatabase', 'QueryValidationError', 'SchemaError',
           'StateSpaceError', 'World', 'scan', 'where']
