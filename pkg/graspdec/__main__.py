# graspdec/__main__.py

from graspdec.cli.cli import cli

if __name__ == "__main__":
    cli()
