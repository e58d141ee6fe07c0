# Entry point: `python index.py run data/cournot.toml --seed 7`
import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
