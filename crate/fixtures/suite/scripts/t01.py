print(len(brunnen))
print(brunnen.columns)
final_answer(f"In der Stadt Zürich gibt es {len(brunnen)} öffentliche Brunnen.")
