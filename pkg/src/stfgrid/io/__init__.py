"""Case readers, node-breaker documents, reports and matrix dumps."""
