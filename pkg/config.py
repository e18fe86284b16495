"""
Configurações da aplicação Flask
"""
import os


class Config:
    """
    Configuração base da aplicação
    """
    # Configurações do banco de dados (registro de execuções e do cache)
    SQLALCHEMY_DATABASE_URI = os.environ.get('DATABASE_URL') or 'sqlite:///hmflow.db'
    SQLALCHEMY_TRACK_MODIFICATIONS = False

    # Diretórios de trabalho
    CACHE_DIR = os.environ.get('HMFLOW_CACHE_DIR') or 'kernel_cache'
    OUT_DIR = os.environ.get('HMFLOW_OUT_DIR') or 'runs'

    LOG_LEVEL = os.environ.get('HMFLOW_LOG_LEVEL') or 'INFO'
    THREADS = 1

    # Sobrescritas do arquivo de experimento (HMFLOW_EXPERIMENT__green__dimension=3)
    EXPERIMENT = {}


class DevelopmentConfig(Config):
    """
    Configuração para desenvolvimento
    """
    DEBUG = True


class ProductionConfig(Config):
    """
    Configuração para produção (execuções longas em servidor)
    """
    DEBUG = False

    SQLALCHEMY_DATABASE_URI = os.environ.get('DATABASE_URL')

    def __init__(self):
        if not self.SQLALCHEMY_DATABASE_URI:
            raise ValueError("DATABASE_URL environment variable must be set for production")


class TestingConfig(Config):
    """
    Configuração para testes
    """
    TESTING = True
    SQLALCHEMY_DATABASE_URI = 'sqlite:///:memory:'
    LOG_LEVEL = 'WARNING'


# Dicionário de configurações
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
