"""
Smoke run: environment, settings and the quick registered experiments.

Runs each active experiment through the CLI in a subprocess, the same way a
user would, and reports the exit code of each.
"""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
QUICK_EXPERIMENTS = ['exp1-order-stats', 'doubling-depth3', 'two-stage-uniform', 'correlation-hurts-duality']
EXIT_MEANINGS = {
    0: 'all checks pass',
    1: 'a check failed',
    2: 'usage or config error',
    3: 'domain or size-limit error',
    4: 'solver error',
}


def print_section(title):
    """Print a formatted section header"""
    print("\n" + "=" * 70)
    print(f"  {title}")
    print("=" * 70)


def check_environment():
    """Every runtime dependency imports"""
    print_section("STEP 1: Environment Check")

    required_packages = ['numpy', 'scipy', 'pandas', 'openpyxl', 'yaml']
    missing = []
    for package in required_packages:
        try:
            __import__(package)
            print(f"  ✅ {package:15} - Installed")
        except ImportError:
            print(f"  ❌ {package:15} - Missing")
            missing.append(package)

    if missing:
        print(f"\n  ⚠️  Missing packages: {', '.join(missing)}")
        print("  Install with: pip install -r requirements.txt")
        return False
    return True


def check_settings():
    """Settings load and the registry lists the quick experiments"""
    print_section("STEP 2: Settings Check")
    sys.path.insert(0, str(ROOT))
    from src.orchestration.experiment_runner import ExperimentRunner
    from src.utils.settings import load_settings

    settings = load_settings()
    runner = ExperimentRunner(registry_path=settings['paths']['registry'], settings=settings)
    known = {e['id'] for e in runner.list_experiments()}
    print(f"  ✅ Registry: {runner.registry_path} ({len(known)} experiments)")

    absent = [e for e in QUICK_EXPERIMENTS if e not in known]
    if absent:
        print(f"  ❌ Not registered: {absent}")
        return False
    return True


def run_experiment(experiment_id):
    """One registered experiment through ``python -m src.cli run``"""
    command = [sys.executable, '-m', 'src.cli', 'run', '--experiment', experiment_id, '--no-log-file',
               '--log-level', 'WARNING']
    completed = subprocess.run(command, cwd=ROOT)
    meaning = EXIT_MEANINGS.get(completed.returncode, 'unexpected')
    marker = '✅' if completed.returncode == 0 else '❌'
    print(f"  {marker} {experiment_id:28} exit {completed.returncode} ({meaning})")
    return completed.returncode == 0


def main():
    print("\n" + "=" * 70)
    print("  DYNAMIC AUCTION SMOKE RUN")
    print("=" * 70)

    if not check_environment():
        return False
    if not check_settings():
        return False

    print_section("STEP 3: Quick Experiments")
    results = {experiment_id: run_experiment(experiment_id) for experiment_id in QUICK_EXPERIMENTS}

    print_section("SUMMARY")
    for experiment_id, passed in results.items():
        status = "✅ PASSED" if passed else "❌ FAILED"
        print(f"  {experiment_id:28} {status}")
    print("\n" + "=" * 70)
    if all(results.values()):
        print("  🎉 ALL EXPERIMENTS PASSED")
        print("  CSV outputs are under reports/")
        return True
    print("  ⚠️  SOME EXPERIMENTS FAILED")
    return False


if __name__ == "__main__":
    try:
        success = main()
        sys.exit(0 if success else 1)
    except Exception as e:
        print(f"\n❌ ERROR: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
