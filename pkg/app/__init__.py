"""
Inicialização da aplicação hmflow

Este módulo configura a aplicação Flask que hospeda a CLI de experimentos:
configuração, registro de execuções no banco e os blueprints de comandos.
"""
import copy
import os
import sys

from flask import Flask
from flask_sqlalchemy import SQLAlchemy

# Adicionar o diretório pai ao path para importar config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Inicializar extensões
db = SQLAlchemy()


def create_app(config_name=None, test_config=None):
    """
    Factory function para criar e configurar a aplicação Flask

    Args:
        config_name (str): Nome da configuração a ser usada (default:
            variável HMFLOW_CONFIG ou 'default')
        test_config (dict): Valores que sobrescrevem a configuração (testes)

    Returns:
        Flask: Instância configurada da aplicação
    """
    app = Flask(__name__)

    # Carregar configurações
    if config_name is None:
        config_name = os.environ.get('HMFLOW_CONFIG') or 'default'

    from config import config
    app.config.from_object(config[config_name]())
    app.config['EXPERIMENT'] = copy.deepcopy(app.config.get('EXPERIMENT') or {})
    app.config.from_prefixed_env('HMFLOW')
    if test_config:
        app.config.update(test_config)

    # Os loggers de app.numerics.* herdam o nível do logger da aplicação
    level = app.config['LOG_LEVEL']
    app.logger.setLevel(level.upper() if isinstance(level, str) else int(level))

    # Inicializar extensões com a aplicação
    db.init_app(app)

    # Criar modelos após inicializar o db
    from app.models import get_all_models  # noqa: F401

    # Registrar blueprints de comandos
    from app.commands.green import green_bp
    from app.commands.hmflow import hmflow_bp
    from app.commands.uniqueness import uniqueness_bp
    from app.commands.singularity import singularity_bp
    from app.commands.oracle import oracle_bp
    from app.commands.cache import cache_bp

    app.register_blueprint(green_bp)
    app.register_blueprint(hmflow_bp)
    app.register_blueprint(uniqueness_bp)
    app.register_blueprint(singularity_bp)
    app.register_blueprint(oracle_bp)
    app.register_blueprint(cache_bp)

    # Criar tabelas do banco de dados
    with app.app_context():
        db.create_all()

    return app
