// placeholder, replaced by the experiment runner
int main() { return 0; }
