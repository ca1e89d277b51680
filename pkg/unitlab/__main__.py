"""Main entry point for the unitlab package."""

from .cli.main import main

if __name__ == "__main__":
    raise SystemExit(main())
