"""
Exceções das rotinas numéricas

Todas derivam de NumericsError para que os comandos da CLI possam
capturar falhas numéricas num único ponto, registrar a verificação como
falha e ainda gravar os artefatos do experimento.
"""


class NumericsError(Exception):
    """Erro base das rotinas numéricas"""


class DomainError(NumericsError, ValueError):
    """Argumento fora do domínio da operação (tau <= 0, w <= 0, extrapolação...)"""


class GridCompatibilityError(NumericsError, ValueError):
    """Grades ou tabelas que não compartilham nós/tempos"""


class ConditioningError(NumericsError):
    """Falha de fatoração ou sistema linear mal condicionado"""


class TruncationError(NumericsError):
    """Truncamento do domínio exterior não convergiu"""


class SolverConvergenceError(NumericsError):
    """Solver iterativo (gradiente conjugado) não convergiu"""


class CacheMismatchError(NumericsError):
    """Arquivo de cache com versão de esquema ou chave diferente"""


class WindowError(NumericsError):
    """
    Falha numa janela de Picard

    Attributes:
        time (float): instante em que a falha foi detectada
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class BlowupSignal(WindowError):
    """NaN ou overflow ao avaliar a fonte F"""


class BoundExceeded(WindowError):
    """Um iterado saiu do tubo de norma C1 <= 2*C1"""

    def __init__(self, message, time=None, norm=None, bound=None):
        super().__init__(message, time)
        self.norm = norm
        self.bound = bound


class NoContraction(WindowError):
    """A diferença entre iterados não contrai"""

    def __init__(self, message, time=None, ratio=None, iterations=None):
        super().__init__(message, time)
        self.ratio = ratio
        self.iterations = iterations


class ConfigError(NumericsError):
    """
    Arquivo de experimento inválido

    Attributes:
        key (str): chave pontuada ('green.dimension')
        line (int): linha do arquivo onde a chave aparece (None se não localizada)
        path (str): arquivo de origem
    """

    def __init__(self, message, key=None, line=None, path=None):
        super().__init__(message)
        self.key = key
        self.line = line
        self.path = path

    def __str__(self):
        where = self.path or '<config>'
        if self.line is not None:
            where = f"{where}:{self.line}"
        if self.key:
            return f"{where}: chave '{self.key}': {self.args[0]}"
        return f"{where}: {self.args[0]}"
