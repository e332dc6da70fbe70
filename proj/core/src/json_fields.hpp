#pragma once

#include <optional>
#include <set>
#include <string>
#include <type_traits>

#include "coach/domain.hpp"
#include "coach/errors.hpp"

namespace coach::detail {

// Strict reader over one JSON object: typed field access with field-named
// errors, plus rejection of any key that was never read.
class Fields {
public:
    Fields(const Json& j, std::string type) : j_(j), type_(std::move(type)) {
        if (!j_.is_object()) throw ParseError(type_ + ": expected an object");
    }

    template <typename T>
    T required(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) fail(key, "missing field");
        return convert<T>(key, *it);
    }

    template <typename T>
    std::optional<T> optional(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return std::nullopt;
        return convert<T>(key, *it);
    }

    const Json& raw(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) fail(key, "missing field");
        return *it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (seen_.count(it.key()) == 0) throw ParseError(type_ + "." + it.key() + ": unknown field");
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& message) const {
        throw ParseError(type_ + "." + key + ": " + message);
    }

    [[noreturn]] void invalid(const std::string& message) const { throw ParseError(type_ + ": " + message); }

private:
    template <typename T>
    T convert(const std::string& key, const Json& v) {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(key, "expected string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(key, "expected boolean");
            return v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(key, "expected integer");
            return v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(key, "expected number");
            return v.get<T>();
        } else {
            try {
                return v.get<T>();
            } catch (const ParseError& e) {
                fail(key, e.what());
            } catch (const Json::exception& e) {
                fail(key, e.what());
            }
        }
    }

    const Json& j_;
    std::string type_;
    std::set<std::string> seen_;
};

}  // namespace coach::detail
