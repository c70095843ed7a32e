"""STAR-RIS MIMO simulator: joint precoding and coefficient optimisation."""
