import sys

from flicr import main

if __name__ == '__main__':
    sys.exit(main())
