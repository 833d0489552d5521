from delineo.cli.main import run

run()
