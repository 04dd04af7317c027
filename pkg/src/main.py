import sys

from .services.exwave.main import main

if __name__ == "__main__":
    sys.exit(main())
