import sys

from cadlag_line.cli import main

if __name__ == "__main__":
    sys.exit(main())
