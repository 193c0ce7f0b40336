#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tuhr/domain.hpp"

namespace tuhr::auth {

enum class HashCost : std::uint8_t {
    Interactive,  // libsodium's interactive limits
    Minimum,      // for tests only
};

struct Credential {
    std::string username;
    std::string name;
    std::string password_hash;  // crypto_pwhash_str output
    Role role = Role::Worker;
};

struct Principal {
    std::string username;
    Role role = Role::Worker;
};

struct AuthOptions {
    std::filesystem::path file;  // users.json; empty keeps everything in memory
    Millis idle_timeout{8LL * 3600 * 1000};
    HashCost cost = HashCost::Interactive;
    std::function<Timestamp()> clock = wall_now;
};

std::string hash_password(const std::string& password, HashCost cost);

/// Usernames, password hashes and live sessions. Hashes persist in a JSON
/// file next to the event log; sessions live in memory only.
class CredentialStore {
public:
    explicit CredentialStore(AuthOptions options);

    /// Adds entries of a seed file that are not yet known. Each entry holds
    /// `username`, `role`, optional `name` and either `password` or
    /// `password_hash`. Throws INVALID.
    std::size_t seed(const std::filesystem::path& file);

    /// Fresh token, or nullopt. Unknown users cost the same as bad passwords.
    std::optional<std::string> login(const std::string& username, const std::string& password);
    void logout(const std::string& token);
    /// Principal behind a live token; refreshes its idle timer.
    std::optional<Principal> resolve(const std::string& token);

    std::optional<Credential> find(const std::string& username) const;
    std::vector<Credential> list() const;
    /// Throws DUPLICATE, INVALID.
    void create(const std::string& username, const std::string& name, const std::string& password, Role role);
    /// Absent fields stay as they are. Throws NOT_FOUND, INVALID, IN_USE.
    void update(const std::string& username, std::optional<std::string> name, std::optional<std::string> password,
                std::optional<Role> role);
    /// Also ends the user's sessions. Throws NOT_FOUND, IN_USE (last admin).
    void remove(const std::string& username);
    std::size_t size() const;

private:
    struct Session {
        std::string username;
        Timestamp last_used;
    };

    void save_locked() const;
    std::size_t admins_locked() const;

    AuthOptions options_;
    mutable std::mutex mu_;
    std::map<std::string, Credential> users_;
    std::map<std::string, Session> sessions_;
    std::string dummy_hash_;
};

}  // namespace tuhr::auth
