from .base import DatasetSource
from .builtin import BUILTIN_DATASETS, BuiltinSource
from .files import CsvSource, InlineSource

__all__ = ['DatasetSource', 'BuiltinSource', 'BUILTIN_DATASETS', 'CsvSource', 'InlineSource']
