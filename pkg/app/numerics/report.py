"""
Relatórios de verificação produzidos pelas rotinas numéricas
"""
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


@dataclass
class CheckReport:
    """
    Resultado de uma verificação numérica

    Attributes:
        name (str): identificador estável da verificação
        passed (bool): resultado; ignorado quando conclusive é False
        value (float): grandeza medida
        threshold (float): limite comparado com value
        conclusive (bool): False para verificações apenas exploratórias
        details (dict): dados adicionais serializáveis em JSON
    """
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    conclusive: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'name': self.name,
            'passed': bool(self.passed),
            'value': to_plain(self.value),
            'threshold': to_plain(self.threshold),
            'conclusive': bool(self.conclusive),
            'details': to_plain(self.details),
        }


def to_plain(obj: Any):
    """Converte arrays e escalares numpy para tipos JSON"""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, np.generic):
        return to_plain(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


