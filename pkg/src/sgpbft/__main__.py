"""Run the `sgpbft` command line."""

# local
from sgpbft.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
