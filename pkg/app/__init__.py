# Hardy space laboratory
