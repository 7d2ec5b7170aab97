import os
import sys


def _pin_threads(argv) -> None:
    # BLAS reads these once, when numpy is first imported
    for i, a in enumerate(argv):
        n = a.split("=", 1)[1] if a.startswith("--threads=") else argv[i + 1] if a == "--threads" and i + 1 < len(argv) else None
        if n:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, n)


_pin_threads(sys.argv[1:])

from saesense.cli import main  # noqa: E402

sys.exit(main())
