# Deliberately left empty.
