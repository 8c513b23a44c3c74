# Python version check: 3.11-3.13 (tomllib, typing features used by the models)
import sys


__version__ = "0.3.0"

if sys.version_info < (3, 10) or sys.version_info >= (3, 14):
    print(
        "Warning: branchflow {pkg} is tested on Python 3.11-3.13, running {ver}".format(
            pkg=__version__, ver=".".join(map(str, sys.version_info[:3]))
        )
    )
