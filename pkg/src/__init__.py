# Cloud scheduling simulator and MetaNet policy selector
