#include "tuhr/auth.hpp"

#include <sodium.h>

#include <cctype>
#include <fstream>

#include "tuhr/codec.hpp"
#include "tuhr/error.hpp"

namespace tuhr::auth {

namespace {

void ensure_sodium()
{
    static const bool ok = sodium_init() >= 0;
    if (!ok) throw Error("IO_FAILURE", "libsodium failed to initialize");
}

std::string random_token()
{
    unsigned char raw[32];
    randombytes_buf(raw, sizeof raw);
    char hex[sizeof raw * 2 + 1];
    sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
    return hex;
}

bool verify(const std::string& hash, const std::string& password)
{
    return crypto_pwhash_str_verify(hash.c_str(), password.data(), password.size()) == 0;
}

void check_username(const std::string& u)
{
    if (u.empty() || u.size() > 64) throw Error("INVALID", "username must be 1 to 64 characters");
    for (unsigned char c : u)
        if (!(std::isalnum(c) || c == '-' || c == '_' || c == '.'))
            throw Error("INVALID", "username may only hold letters, digits, '-', '_' and '.'");
}

void check_password(const std::string& p)
{
    if (p.size() < 4) throw Error("INVALID", "password must have at least 4 characters");
}

}  // namespace

std::string hash_password(const std::string& password, HashCost cost)
{
    ensure_sodium();
    const bool min = cost == HashCost::Minimum;
    char out[crypto_pwhash_STRBYTES];
    if (crypto_pwhash_str(out, password.data(), password.size(),
                          min ? crypto_pwhash_OPSLIMIT_MIN : crypto_pwhash_OPSLIMIT_INTERACTIVE,
                          min ? crypto_pwhash_MEMLIMIT_MIN : crypto_pwhash_MEMLIMIT_INTERACTIVE) != 0)
        throw Error("IO_FAILURE", "out of memory while hashing a password");
    return out;
}

CredentialStore::CredentialStore(AuthOptions options) : options_(std::move(options))
{
    ensure_sodium();
    dummy_hash_ = hash_password(random_token(), options_.cost);
    if (options_.file.empty() || !std::filesystem::exists(options_.file)) return;
    std::ifstream in(options_.file);
    Json j;
    try {
        j = Json::parse(in);
        for (const auto& u : j.at("users")) {
            Credential c;
            c.username = u.at("username").get<std::string>();
            c.name = u.value("name", c.username);
            c.password_hash = u.at("password_hash").get<std::string>();
            auto role = parse_role(u.at("role").get<std::string>());
            if (!role) throw Error("INVALID", "bad role for " + c.username);
            c.role = *role;
            users_[c.username] = std::move(c);
        }
    } catch (const Json::exception& e) {
        throw Error("INVALID", options_.file.string() + ": " + e.what());
    }
}

std::size_t CredentialStore::seed(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw Error("INVALID", "cannot read credentials file " + file.string());
    std::vector<Credential> fresh;
    try {
        const auto j = Json::parse(in);
        const auto& entries = j.is_object() ? j.at("users") : j;
        for (const auto& u : entries) {
            Credential c;
            c.username = u.at("username").get<std::string>();
            check_username(c.username);
            c.name = u.value("name", c.username);
            auto role = parse_role(u.value("role", std::string{"WORKER"}));
            if (!role) throw Error("INVALID", "bad role for " + c.username);
            c.role = *role;
            if (u.contains("password_hash")) {
                c.password_hash = u.at("password_hash").get<std::string>();
            } else {
                const auto pw = u.at("password").get<std::string>();
                check_password(pw);
                c.password_hash = hash_password(pw, options_.cost);
            }
            fresh.push_back(std::move(c));
        }
    } catch (const Json::exception& e) {
        throw Error("INVALID", file.string() + ": " + e.what());
    }
    std::lock_guard lock(mu_);
    std::size_t added = 0;
    for (auto& c : fresh) added += users_.emplace(c.username, c).second;
    if (added) save_locked();
    return added;
}

std::optional<std::string> CredentialStore::login(const std::string& username, const std::string& password)
{
    std::string hash;
    {
        std::lock_guard lock(mu_);
        auto it = users_.find(username);
        hash = it == users_.end() ? dummy_hash_ : it->second.password_hash;
    }
    const bool good = verify(hash, password) && hash != dummy_hash_;
    if (!good) return std::nullopt;
    std::lock_guard lock(mu_);
    if (!users_.count(username)) return std::nullopt;
    auto token = random_token();
    sessions_[token] = Session{username, options_.clock()};
    return token;
}

void CredentialStore::logout(const std::string& token)
{
    std::lock_guard lock(mu_);
    sessions_.erase(token);
}

std::optional<Principal> CredentialStore::resolve(const std::string& token)
{
    std::lock_guard lock(mu_);
    auto it = sessions_.find(token);
    if (it == sessions_.end()) return std::nullopt;
    const auto now = options_.clock();
    if (now - it->second.last_used > options_.idle_timeout) {
        sessions_.erase(it);
        return std::nullopt;
    }
    auto user = users_.find(it->second.username);
    if (user == users_.end()) {
        sessions_.erase(it);
        return std::nullopt;
    }
    it->second.last_used = now;
    return Principal{user->first, user->second.role};
}

std::optional<Credential> CredentialStore::find(const std::string& username) const
{
    std::lock_guard lock(mu_);
    auto it = users_.find(username);
    if (it == users_.end()) return std::nullopt;
    return it->second;
}

std::vector<Credential> CredentialStore::list() const
{
    std::lock_guard lock(mu_);
    std::vector<Credential> out;
    for (const auto& [_, c] : users_) out.push_back(c);
    return out;
}

void CredentialStore::create(const std::string& username, const std::string& name, const std::string& password,
                             Role role)
{
    check_username(username);
    check_password(password);
    auto hash = hash_password(password, options_.cost);
    std::lock_guard lock(mu_);
    if (users_.count(username)) throw Error("DUPLICATE", "user " + username + " already exists");
    users_[username] = Credential{username, name.empty() ? username : name, std::move(hash), role};
    save_locked();
}

void CredentialStore::update(const std::string& username, std::optional<std::string> name,
                             std::optional<std::string> password, std::optional<Role> role)
{
    std::string hash;
    if (password) {
        check_password(*password);
        hash = hash_password(*password, options_.cost);
    }
    std::lock_guard lock(mu_);
    auto it = users_.find(username);
    if (it == users_.end()) throw Error("NOT_FOUND", "no user " + username);
    if (role && *role != Role::Admin && it->second.role == Role::Admin && admins_locked() == 1)
        throw Error("IN_USE", "cannot demote the last administrator");
    if (name) it->second.name = *name;
    if (password) it->second.password_hash = std::move(hash);
    if (role) it->second.role = *role;
    save_locked();
}

void CredentialStore::remove(const std::string& username)
{
    std::lock_guard lock(mu_);
    auto it = users_.find(username);
    if (it == users_.end()) throw Error("NOT_FOUND", "no user " + username);
    if (it->second.role == Role::Admin && admins_locked() == 1)
        throw Error("IN_USE", "cannot delete the last administrator");
    users_.erase(it);
    std::erase_if(sessions_, [&](const auto& s) { return s.second.username == username; });
    save_locked();
}

std::size_t CredentialStore::size() const
{
    std::lock_guard lock(mu_);
    return users_.size();
}

std::size_t CredentialStore::admins_locked() const
{
    std::size_t n = 0;
    for (const auto& [_, c] : users_) n += c.role == Role::Admin;
    return n;
}

void CredentialStore::save_locked() const
{
    if (options_.file.empty()) return;
    Json users = Json::array();
    for (const auto& [_, c] : users_)
        users.push_back(
            {{"username", c.username}, {"name", c.name}, {"role", to_string(c.role)}, {"password_hash", c.password_hash}});
    const auto tmp = options_.file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << Json{{"users", users}}.dump(2) << '\n';
        if (!out) throw Error("IO_FAILURE", "cannot write " + tmp);
    }
    std::error_code ec;
    std::filesystem::permissions(tmp, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write, ec);
    std::filesystem::rename(tmp, options_.file, ec);
    if (ec) throw Error("IO_FAILURE", "cannot replace " + options_.file.string() + ": " + ec.message());
}

}  // namespace tuhr::auth
