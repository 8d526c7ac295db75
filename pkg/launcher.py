import logging
import sys

from app import STPLabApp
from config.settings import get_log_level


def main():
    """
    Main function to configure logging and run one lab command
    """
    logging.basicConfig(
        level=get_log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    argv = sys.argv[1:]
    command = " ".join(arg for arg in argv[:2] if not arg.startswith("-")) or "help"
    print(f"🚀 Starting STP lab: {command}...", file=sys.stderr)

    code = STPLabApp().run(argv)
    if code == 0:
        print("✅ Done! Artifacts and manifest are in the output directory.", file=sys.stderr)
    elif code == 2:
        print("❌ Invalid arguments or input; see the error above.", file=sys.stderr)
    else:
        print("❌ Command failed; see error.json in the output directory.", file=sys.stderr)
    sys.exit(code)


if __name__ == "__main__":
    main()
