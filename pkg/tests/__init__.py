# Tests for the covert key-expansion toolkit
