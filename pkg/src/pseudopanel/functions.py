"""The 18 consumption functions tracked by the survey, in canonical order."""

FUNCTION_CODES = (
    "alcohol_tobacco",
    "food_home",
    "food_away",
    "housing_maintenance",
    "communications",
    "others",
    "transfers",
    "education",
    "clothing",
    "housing",
    "leisure",
    "furniture",
    "health",
    "security",
    "personal_care",
    "personal_transport",
    "public_transport",
    "vehicles",
)

FUNCTION_LABELS = {
    "alcohol_tobacco": "Alcohol and tobacco",
    "food_home": "Food at home",
    "food_away": "Food away from home",
    "housing_maintenance": "Housing maintenance",
    "communications": "Communications",
    "others": "Others",
    "transfers": "Transfers to other households",
    "education": "Education",
    "clothing": "Clothing",
    "housing": "Housing",
    "leisure": "Leisure",
    "furniture": "Furniture and appliances",
    "health": "Health",
    "security": "Insurance and security",
    "personal_care": "Personal care",
    "personal_transport": "Personal transport",
    "public_transport": "Public transport",
    "vehicles": "Vehicle purchases",
}

N_FUNCTIONS = len(FUNCTION_CODES)
