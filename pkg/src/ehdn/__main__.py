"""Entry point for python -m ehdn"""

from ehdn.cli import main

if __name__ == "__main__":
    main()
