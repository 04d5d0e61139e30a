"""Command-line experiment harness: runs, comparisons and the self-test."""
