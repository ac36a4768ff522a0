# Makes the command surface a package
