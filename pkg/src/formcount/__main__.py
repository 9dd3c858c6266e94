from formcount.cli import entry

entry()
