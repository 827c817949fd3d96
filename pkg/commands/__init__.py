"""Command-line subcommands. Each module exposes main(args, config), called by main.py."""
