"""Case studies, config-driven runs and the command-line front end."""
