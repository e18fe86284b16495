"""
Módulo de modelos da aplicação

Este módulo centraliza a importação de todos os modelos de dados
(execuções, verificações e índice do cache de núcleos).
"""

# Importar todos os modelos
from .run import ExperimentRun, CheckResult
from .kernel_cache import KernelCacheEntry

# Lista de todos os modelos para facilitar importação
__all__ = [
    'ExperimentRun',
    'CheckResult',
    'KernelCacheEntry'
]


def get_all_models():
    """
    Retorna um dicionário com todos os modelos da aplicação

    Returns:
        dict: Dicionário com nome do modelo como chave e classe como valor
    """
    return {
        'ExperimentRun': ExperimentRun,
        'CheckResult': CheckResult,
        'KernelCacheEntry': KernelCacheEntry
    }
