#include <doctest.h>
TEST_CASE("criterion 1 placeholder") { CHECK(false); }
TEST_CASE("criterion 2 placeholder") { CHECK(false); }
TEST_CASE("criterion 3 placeholder") { CHECK(false); }
TEST_CASE("criterion 4 placeholder") { CHECK(false); }
TEST_CASE("criterion 5 placeholder") { CHECK(false); }
TEST_CASE("criterion 6 placeholder") { CHECK(false); }
TEST_CASE("criterion 7 placeholder") { CHECK(false); }
TEST_CASE("criterion 8 placeholder") { CHECK(false); }
TEST_CASE("criterion 9 placeholder") { CHECK(false); }
