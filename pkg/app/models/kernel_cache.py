"""
Modelo do índice de tabelas de núcleo em cache
"""
from datetime import datetime

from app import db


class KernelCacheEntry(db.Model):
    """
    Modelo para uma tabela de núcleo gravada em disco

    Attributes:
        id (int): Identificador único
        key (str): Chave de conteúdo (sha256)
        domain_kind (str): 'ball', 'annulus' ou 'exterior'
        dimension (int): Dimensão m
        scheme (str): Versão do esquema numérico
        path (str): Arquivo da tabela
        size_bytes (int): Tamanho do arquivo
        hits (int): Quantas vezes a tabela foi reutilizada
        created_at (datetime): Data de criação
    """
    __tablename__ = 'kernel_cache_entries'

    id = db.Column(db.Integer, primary_key=True)
    key = db.Column(db.String(64), unique=True, nullable=False, index=True)
    domain_kind = db.Column(db.String(20), nullable=False)
    dimension = db.Column(db.Integer, nullable=False)
    scheme = db.Column(db.String(50), nullable=False)
    path = db.Column(db.String(500), nullable=False)
    size_bytes = db.Column(db.Integer, nullable=False, default=0)
    hits = db.Column(db.Integer, nullable=False, default=0)
    created_at = db.Column(db.DateTime, default=datetime.utcnow, nullable=False)

    def __repr__(self):
        return f'<KernelCacheEntry {self.key[:12]} {self.domain_kind} m={self.dimension}>'

    def to_dict(self):
        """
        Converte o objeto KernelCacheEntry para dicionário

        Returns:
            dict: Dados da entrada de cache
        """
        return {
            'id': self.id,
            'key': self.key,
            'domain_kind': self.domain_kind,
            'dimension': self.dimension,
            'scheme': self.scheme,
            'path': self.path,
            'size_bytes': self.size_bytes,
            'hits': self.hits,
            'created_at': self.created_at.isoformat()
        }
