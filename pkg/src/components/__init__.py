# Empty file to make components a package
