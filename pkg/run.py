import sys

from obstacle_kit.cli import main

if __name__ == '__main__':
    sys.exit(main())
