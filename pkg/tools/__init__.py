"""Command-line tools for inspecting STAR-RIS subproblems."""
