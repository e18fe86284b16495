"""
Testes dos modelos de execução e do índice de cache
"""
import math

import pytest
from sqlalchemy.exc import IntegrityError

from app import db
from app.models import CheckResult, ExperimentRun, KernelCacheEntry, get_all_models
from app.numerics.report import CheckReport


def _run():
    run = ExperimentRun(subcommand='green-verify', config_hash='a' * 64, out_dir='runs/x')
    db.session.add(run)
    db.session.commit()
    return run


@pytest.mark.parametrize('code, status', [
    (0, ExperimentRun.PASSED),
    (1, ExperimentRun.FAILED),
    (2, ExperimentRun.ERROR),
])
def test_finish_maps_exit_code_to_status(app, code, status):
    run = _run()
    assert run.status == ExperimentRun.RUNNING
    run.finish(code, 1.5)
    db.session.commit()
    assert run.status == status
    assert run.exit_code == code
    assert run.finished_at is not None


def test_check_result_from_report(app):
    run = _run()
    report = CheckReport('green.ball.symmetry', False, math.inf, 1e-5, details={'worst': [1, 2]})
    check = CheckResult.from_report(report)
    run.checks.append(check)
    db.session.commit()
    assert check.value is None
    assert check.threshold == 1e-5
    assert check.to_dict()['detail'] == {'worst': [1, 2]}
    assert run.failed_checks == [check]


def test_exploratory_failure_is_not_a_failed_check(app):
    run = _run()
    run.checks.append(CheckResult.from_report(CheckReport('green.kernel_envelope', False, 2.0, 1.0, conclusive=False)))
    db.session.commit()
    assert run.failed_checks == []


def test_run_to_dict(app):
    run = _run()
    run.checks.append(CheckResult.from_report(CheckReport('kernel.mass', True, 1e-12, 1e-8)))
    run.finish(0, 0.25)
    db.session.commit()
    data = run.to_dict()
    assert data['status'] == 'passed'
    assert data['checks'][0]['name'] == 'kernel.mass'
    assert data['finished_at'] is not None


def test_cache_entry_key_is_unique(app):
    for _ in range(2):
        db.session.add(KernelCacheEntry(key='b' * 64, domain_kind='ball', dimension=3, scheme='cn-1',
                                        path='x.hmk', size_bytes=1))
    with pytest.raises(IntegrityError):
        db.session.commit()
    db.session.rollback()


def test_registry_lists_models():
    assert set(get_all_models()) == {'ExperimentRun', 'CheckResult', 'KernelCacheEntry'}
