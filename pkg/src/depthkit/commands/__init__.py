"""``depthkit`` subcommands, one module per command."""
