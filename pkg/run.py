"""
Ponto de entrada da CLI hmflow

Os subcomandos são registrados pelos blueprints de app.commands; variáveis
de um arquivo .env são carregadas antes de criar a aplicação.

Usage:
    python run.py green-verify --config experiments/default.toml
    python run.py hmflow-run --out-dir runs/euclidean
    python run.py cache-list
"""
from flask.cli import FlaskGroup

from app import create_app

cli = FlaskGroup(create_app=create_app, add_default_commands=False, load_dotenv=True,
                 help='Experimentos numéricos do fluxo de aplicações harmônicas.')

if __name__ == '__main__':
    cli()
