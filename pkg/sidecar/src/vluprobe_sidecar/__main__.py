"""Allow `python -m vluprobe_sidecar`."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
