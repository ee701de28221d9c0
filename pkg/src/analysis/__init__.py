# analysis package
