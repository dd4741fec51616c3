// Acceptance suite placeholder; filled in once the pipeline exists.
