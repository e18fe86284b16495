"""
Modelos de execuções de experimentos e de seus resultados de verificação
"""
import json
from datetime import datetime

from app import db


class ExperimentRun(db.Model):
    """
    Modelo para execuções de subcomandos

    Attributes:
        id (int): Identificador único da execução
        subcommand (str): Subcomando executado ('green-verify', ...)
        config_hash (str): sha256 do snapshot da configuração
        status (str): Status da execução
        out_dir (str): Diretório dos artefatos
        exit_code (int): Código de saída do comando
        wall_clock (float): Duração em segundos
        started_at (datetime): Início da execução
        finished_at (datetime): Fim da execução
        checks (relationship): Relacionamento com os resultados de verificação
    """
    __tablename__ = 'experiment_runs'

    # Status possíveis da execução
    RUNNING = 'running'
    PASSED = 'passed'
    FAILED = 'failed'
    ERROR = 'error'

    id = db.Column(db.Integer, primary_key=True)
    subcommand = db.Column(db.String(50), nullable=False)
    config_hash = db.Column(db.String(64), nullable=False)
    status = db.Column(db.String(20), default=RUNNING, nullable=False)
    out_dir = db.Column(db.String(500), nullable=False)
    exit_code = db.Column(db.Integer)
    wall_clock = db.Column(db.Float)
    started_at = db.Column(db.DateTime, default=datetime.utcnow, nullable=False)
    finished_at = db.Column(db.DateTime)

    # Relacionamentos
    checks = db.relationship('CheckResult', backref='run', lazy=True, cascade='all, delete-orphan')

    def __repr__(self):
        return f'<ExperimentRun {self.id} {self.subcommand} - {self.status}>'

    @property
    def failed_checks(self):
        """Verificações conclusivas que falharam"""
        return [check for check in self.checks if check.conclusive and not check.passed]

    def finish(self, exit_code, wall_clock):
        """
        Fecha a execução com o código de saída

        Args:
            exit_code (int): 0 sucesso, 1 verificação falhou, 2 configuração inválida
            wall_clock (float): duração em segundos
        """
        self.exit_code = exit_code
        self.wall_clock = wall_clock
        self.finished_at = datetime.utcnow()
        self.status = {0: self.PASSED, 1: self.FAILED}.get(exit_code, self.ERROR)

    def to_dict(self):
        """
        Converte o objeto ExperimentRun para dicionário

        Returns:
            dict: Dados da execução
        """
        return {
            'id': self.id,
            'subcommand': self.subcommand,
            'config_hash': self.config_hash,
            'status': self.status,
            'out_dir': self.out_dir,
            'exit_code': self.exit_code,
            'wall_clock': self.wall_clock,
            'checks': [check.to_dict() for check in self.checks],
            'started_at': self.started_at.isoformat(),
            'finished_at': self.finished_at.isoformat() if self.finished_at else None
        }


class CheckResult(db.Model):
    """
    Modelo para o resultado de uma verificação numérica

    Attributes:
        id (int): Identificador único
        run_id (int): ID da execução
        name (str): Nome estável da verificação
        passed (bool): Resultado
        conclusive (bool): False para verificações exploratórias
        value (float): Grandeza medida
        threshold (float): Limite comparado
        detail (str): Detalhes em JSON
    """
    __tablename__ = 'check_results'

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey('experiment_runs.id'), nullable=False)
    name = db.Column(db.String(100), nullable=False)
    passed = db.Column(db.Boolean, nullable=False)
    conclusive = db.Column(db.Boolean, default=True, nullable=False)
    value = db.Column(db.Float)
    threshold = db.Column(db.Float)
    detail = db.Column(db.Text)

    def __repr__(self):
        return f'<CheckResult {self.name} {"PASS" if self.passed else "FAIL"}>'

    @classmethod
    def from_report(cls, report):
        """Cria o resultado a partir de um CheckReport"""
        data = report.to_dict()
        return cls(
            name=data['name'],
            passed=data['passed'],
            conclusive=data['conclusive'],
            value=_as_float(data['value']),
            threshold=_as_float(data['threshold']),
            detail=json.dumps(data['details'], sort_keys=True)
        )

    def to_dict(self):
        return {
            'id': self.id,
            'run_id': self.run_id,
            'name': self.name,
            'passed': self.passed,
            'conclusive': self.conclusive,
            'value': self.value,
            'threshold': self.threshold,
            'detail': json.loads(self.detail) if self.detail else {}
        }


def _as_float(value):
    return value if isinstance(value, (int, float)) and not isinstance(value, bool) else None
