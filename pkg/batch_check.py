# batch_check.py
import sys

from src import config
from src.checks import run_checks

if __name__ == "__main__":
    config.configure_logging()
    level = sys.argv[1] if len(sys.argv) > 1 else "full"
    print(f"Starting {level} check suite...")
    results = run_checks(level)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"  {'ok  ' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    print(f"Check suite finished: {len(results) - len(failed)}/{len(results)} passed.")
    sys.exit(3 if failed else 0)
